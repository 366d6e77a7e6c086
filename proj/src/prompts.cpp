#include "kamac/prompts.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace kamac {

// Template texts live here as versioned assets; edits are pinned by the
// golden-file tests.

const std::string kAnswerTemplate =
    "Answer: (X)\n"
    "where X is the letter of the chosen option. Your reasoning may precede "
    "this line, but the final line must be exactly \"Answer: (X)\".";

const std::string kFinalAnswerTemplate =
    "Answer: (X)\n"
    "A single line where X is the letter of the chosen option, with nothing "
    "after it.";

namespace {

const std::string kP1System =
    "You are an experienced medical expert who recruits a group of experts "
    "with diverse identities and asks them to discuss and solve the given "
    "medical query.";

const std::string kP1User = R"(Question: {{question}}

You can recruit {{num_agents}} experts in different medical expertise.

Considering the medical question and the options for the answer, what kind of experts will you recruit to better make an accurate answer?

Also, you need to specify the communication structure between experts (e.g., Pulmonologist == Neonatologist == Medical Geneticist == Pediatrician > Cardiologist), or indicate if they are independent.

For example, if you want to recruit five experts, your answer can be like:

1. Pediatrician - Specializes in the medical care of infants, children, and adolescents. - Hierarchy: Independent

2. Cardiologist - Focuses on the diagnosis and treatment of heart and blood vessel-related conditions. - Hierarchy: Pediatrician > Cardiologist

3. Pulmonologist - Specializes in the diagnosis and treatment of respiratory system disorders. - Hierarchy: Independent

4. Neonatologist - Focuses on the care of newborn infants, especially those who are born prematurely or have medical issues at birth. - Hierarchy: Independent

5. Medical Geneticist - Specializes in the study of genes and heredity. - Hierarchy: Independent

Please answer in the above format, and do not include your reason.)";

const std::string kP1StrictUser = R"(Question: {{question}}

Considering the medical question and the options for the answer, what kinds of experts will you recruit to better make an accurate decision? You also need to clearly specify the communication structure between experts or indicate if they are independent.

You must recruit exactly the following {{num_agents}} experts, with no substitutions, no additional experts, and no omissions:

(e.g., Radiation Oncologist == Medical Oncologist == Pathologist == Surgical Oncologist (Recurrence/Secondary Cancers) == Targeted Therapy Expert),

Please strictly follow the format shown below, without adding any extra explanation or reasoning.

Format example if recruiting {{num_agents}} experts:

1. Radiation Oncologist - Your expertise is strictly limited to radiation therapy planning and dosing for head and neck squamous cell carcinoma, especially HPV-positive cases. - Hierarchy: Radiation Oncologist == Medical Oncologist

2. Medical Oncologist - Your expertise is strictly limited to systemic therapy decisions, including chemotherapy and immunotherapy in head and neck cancers. - Hierarchy: Medical Oncologist == Radiation Oncologist

3. Surgical Oncologist (Recurrence/Secondary Cancers) - Your expertise is strictly limited to evaluating surgical options for recurrent or secondary malignancies in head and neck cancers. - Hierarchy: Surgical Oncologist == Pathologist

4. Pathologist - Your expertise is strictly limited to pathological diagnosis of head and neck squamous cell carcinoma, HPV status evaluation, and margin assessment post-surgery. - Hierarchy: Pathologist == Surgical Oncologist

5. Targeted Therapy Expert - Your expertise is strictly limited to clinical application of EGFR inhibitors and novel agents targeting HPV-positive tumors. - Hierarchy: Targeted Therapy Expert -> Medical Oncologist

Your answer must conform exactly to the format above.)";

const std::string kP2System =
    "You are a {{role}} who {{description}}. Your job is to collaborate with "
    "other medical experts in a team.";

const std::string kP2User =
    R"({{visual_cot}}Given the examplers, as a {{role}}, please return your answer to the medical query among the options provided. You are not allowed to switch to any other medical specialty.

{{fewshot_examplers}}

Question: {{question}}

Your answer should be in the format below.

{{answer_template}})";

const std::string kP3User =
    R"(Earlier in this conversation, a set of discussion opinions from other medical experts on your team was provided. Please do not forget those earlier opinions.

Now, additional new opinions have been provided. Considering both the earlier and the latest opinions together, please indicate whether you want to talk to any additional expert (yes/no).

Opinions: {{assessment}})";

const std::string kP4User =
    R"(You are part of the team: {{agents}}.
Earlier in this conversation, a set of discussion opinions from one or more medical experts on your team was provided. Please carefully review that information now. Based on your professional boundaries, determine whether there is a knowledge limitation or missing perspective that requires support from another specialist.

Please answer yes or no.

If yes, specify the type of expert needed and provide a short reason.
Be specific and consider the multidisciplinary needs involved in managing complex patient information (e.g., diagnostic imaging, supportive care, pathology review, and other medical expertise).

It is acceptable to recognize areas of expertise already covered by current team members ({{agents}}).

Do not recommend a specialist if their expertise is already represented in the team.)";

const std::string kP5User =
    R"(Considering the medical question, discussion options, and the current expert team {{agents}}, identify any that require recruiting new types of experts to ensure an accurate decision (exclude {{agents}}).

You also need to clearly specify the communication structure between experts (e.g. Targeted Therapy Expert -> Medical Oncologist, Medical Oncologist == Radiation Oncologist) or indicate if the new expert(s) will work independently.

Do not suggest removing, substituting, or duplicating existing experts. Only add new experts if necessary.

Format example if recruiting experts:

1. Medical Oncologist - Your expertise is strictly limited to systemic therapy decisions, including chemotherapy and immunotherapy in head and neck cancers. - Hierarchy: Independent

2. Other Medical Experts.

Your answer must conform exactly to the format above. If the existing expert team comprehensively have covered the necessary expertise for accurate decision, answer: <skip recruitment>)";

const std::string kP6User =
    R"(Now that you've interacted with other medical experts, remind your expertise and the comments from other experts and make your final answer to the given question: {{question}}
Answer: {{answer_template}}

Only output your final answer in the format below:

{{final_answer_template}}

Question: {{question}})";

const std::string kP7System =
    "You are a final medical decision maker who reviews all opinions from "
    "different medical experts and make final decision.";

const std::string kP7User =
    R"(Given each agent's final answer, please review each agent's opinion and make the final answer to the question by taking a majority vote.

Only output your final answer in the format below:

{{final_answer_template}}

Question: {{question}})";

const std::string kVisualCoTUser =
    R"(You will be provided with a head and neck CT scan that includes one or more masked regions of interest (ROIs). Alongside the scan, one or more 3D bounding box coordinates will be supplied, each defining specific volumetric regions within the scan. These coordinates identify either organs, disease regions, or cellular structures. Each bounding box is defined by its minimum and maximum values along the z, y, and x axes and is normalized relative to the original image size.

The given bounding box coordinates are: {{bbox_coords}}.

Task Instructions:

1. Initial Assessment: Carefully analyze the CT scan image (without using the bounding box data). Describe any visible anatomical structures, patterns, abnormalities, and note the characteristics of the masked regions of interest (ROIs).

Do not use the bounding box data at this stage.

2. Mapping Bounding Boxes: Consider the bounding box coordinates and map them to the corresponding areas within the scan.

3. Clinical Reasoning: Summarize the patient's clinical context and findings in a clear, structured bullet-point format and reason through the patient's condition step by step.

4. Integrated Conclusion: Combine your findings from the image analysis, bounding box mapping, and masked ROI to concisely synthesize your final clinical impression.

Be thorough and precise in both your image-based observations and your clinical reasoning.)";

std::vector<std::string> scan_placeholders(const PromptTemplate& t) {
  std::vector<std::string> names;
  auto scan = [&](const std::string& text) {
    size_t pos = 0;
    while ((pos = text.find("{{", pos)) != std::string::npos) {
      size_t end = text.find("}}", pos + 2);
      if (end == std::string::npos) break;
      std::string name = text.substr(pos + 2, end - pos - 2);
      if (std::find(names.begin(), names.end(), name) == names.end())
        names.push_back(name);
      pos = end + 2;
    }
  };
  if (t.system_text) scan(*t.system_text);
  scan(t.user_text);
  return names;
}

PromptTemplate make(TemplateId id, std::optional<std::string> sys, std::string user) {
  PromptTemplate t{id, std::move(sys), std::move(user), {}};
  t.placeholders = scan_placeholders(t);
  return t;
}

const std::vector<PromptTemplate>& all_templates() {
  static const std::vector<PromptTemplate> templates = {
      make(TemplateId::P1, kP1System, kP1User),
      make(TemplateId::P1_strict, kP1System, kP1StrictUser),
      make(TemplateId::P2, kP2System, kP2User),
      make(TemplateId::P3, std::nullopt, kP3User),
      make(TemplateId::P4, std::nullopt, kP4User),
      make(TemplateId::P5, std::nullopt, kP5User),
      make(TemplateId::P6, std::nullopt, kP6User),
      make(TemplateId::P7, kP7System, kP7User),
      make(TemplateId::VisualCoT, std::nullopt, kVisualCoTUser),
  };
  return templates;
}

std::string substitute(const std::string& text,
                       const std::map<std::string, std::string>& bindings,
                       std::vector<std::string>& missing) {
  std::string out;
  out.reserve(text.size());
  size_t pos = 0;
  while (pos < text.size()) {
    size_t open = text.find("{{", pos);
    if (open == std::string::npos) {
      out.append(text, pos, std::string::npos);
      break;
    }
    out.append(text, pos, open - pos);
    size_t close = text.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(text, open, std::string::npos);
      break;
    }
    const std::string name = text.substr(open + 2, close - open - 2);
    auto it = bindings.find(name);
    if (it == bindings.end()) {
      if (std::find(missing.begin(), missing.end(), name) == missing.end())
        missing.push_back(name);
      out += "{{" + name + "}}";
    } else {
      out += it->second;
    }
    pos = close + 2;
  }
  return out;
}

}  // namespace

std::string to_string(TemplateId id) {
  switch (id) {
    case TemplateId::P1: return "P1";
    case TemplateId::P1_strict: return "P1_strict";
    case TemplateId::P2: return "P2";
    case TemplateId::P3: return "P3";
    case TemplateId::P4: return "P4";
    case TemplateId::P5: return "P5";
    case TemplateId::P6: return "P6";
    case TemplateId::P7: return "P7";
    case TemplateId::VisualCoT: return "VisualCoT";
  }
  return "P1";
}

TemplateId template_id_from_string(const std::string& s) {
  for (const auto& t : all_templates())
    if (to_string(t.id) == s) return t.id;
  throw InputError("unknown template id: " + s);
}

const PromptTemplate& get_template(TemplateId id) {
  for (const auto& t : all_templates())
    if (t.id == id) return t;
  throw InputError("unknown template");
}

RenderedPrompt render(TemplateId id, const std::map<std::string, std::string>& bindings) {
  const PromptTemplate& t = get_template(id);
  std::vector<std::string> missing;
  RenderedPrompt out;
  if (t.system_text) out.system_text = substitute(*t.system_text, bindings, missing);
  out.user_text = substitute(t.user_text, bindings, missing);
  if (!missing.empty()) {
    std::string names;
    for (size_t i = 0; i < missing.size(); ++i)
      names += (i ? ", " : "") + missing[i];
    throw ValidationError("unbound placeholders in " + to_string(id) + ": " + names);
  }
  return out;
}

std::string render_role_system(const ExpertSpec& role) {
  if (role.scope.empty())
    throw ValidationError("render_role_system: empty scope for role '" + role.role + "'");
  auto r = render(TemplateId::P2, {{"role", role.role},
                                   {"description", role.scope},
                                   // user-side placeholders unused here
                                   {"visual_cot", ""},
                                   {"fewshot_examplers", ""},
                                   {"question", ""},
                                   {"answer_template", ""}});
  return *r.system_text;
}

std::string render_question(const CaseRecord& c) {
  std::ostringstream os;
  os << c.stem << "\n\nOptions:";
  for (const auto& [label, text] : c.options) os << "\n(" << label << ") " << text;
  return os.str();
}

std::string render_roster(const std::vector<ExpertSpec>& roster) {
  std::string out;
  for (size_t i = 0; i < roster.size(); ++i) out += (i ? ", " : "") + roster[i].role;
  return out;
}

std::string render_bbox_coords(const std::vector<Box3D>& boxes) {
  std::ostringstream os;
  char buf[160];
  for (size_t i = 0; i < boxes.size(); ++i) {
    const Box3D& b = boxes[i];
    if (i) os << "; ";
    std::snprintf(buf, sizeof(buf),
                  "[z_min: %.3f, z_max: %.3f, y_min: %.3f, y_max: %.3f, "
                  "x_min: %.3f, x_max: %.3f]",
                  b.z_min, b.z_max, b.y_min, b.y_max, b.x_min, b.x_max);
    os << buf;
  }
  return os.str();
}

}  // namespace kamac
